//! Hand-written SVG output. Every number is printed with fixed precision so
//! identical inputs give identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::describe::cmp_cells;
use super::{display_cell, fmt_num, ChartSpec, ChartType};
use crate::staging::Cell;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 48.0;
const BOTTOM: f64 = 70.0;
const PALETTE: &[&str] = &["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];
const TABLE_ROWS: usize = 20;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn p(x: f64) -> String {
    format!("{x:.2}")
}

fn plot_w() -> f64 {
    WIDTH - LEFT - RIGHT
}

fn plot_h() -> f64 {
    HEIGHT - TOP - BOTTOM
}

struct Scale {
    lo: f64,
    hi: f64,
}

impl Scale {
    fn new(values: impl Iterator<Item = f64>, include_zero: bool) -> Self {
        let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            lo = 0.0;
            hi = 1.0;
        }
        if include_zero {
            lo = lo.min(0.0);
            hi = hi.max(0.0);
        }
        if (hi - lo).abs() < 1e-12 {
            hi = lo + 1.0;
        }
        Self { lo, hi }
    }

    fn frac(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo)
    }

    fn y(&self, v: f64) -> f64 {
        TOP + plot_h() * (1.0 - self.frac(v))
    }

    fn x(&self, v: f64) -> f64 {
        LEFT + plot_w() * self.frac(v)
    }
}

fn index(columns: &[String], name: Option<&str>) -> Option<usize> {
    name.and_then(|n| columns.iter().position(|c| c == n))
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#,
        w = WIDTH,
        h = HEIGHT
    );
    let _ = writeln!(out, r##"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##);
    let _ = writeln!(out, r#"<text class="title" x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, p(WIDTH / 2.0), esc(title));
}

fn axes(out: &mut String, y: &Scale, x_label: &str, y_label: &str) {
    let (x0, x1, y0, y1) = (LEFT, LEFT + plot_w(), TOP, TOP + plot_h());
    let _ = writeln!(out, r##"<g class="axes" stroke="#333333">"##);
    let _ = writeln!(out, r#"<line x1="{}" y1="{}" x2="{}" y2="{}"/>"#, p(x0), p(y1), p(x1), p(y1));
    let _ = writeln!(out, r#"<line x1="{}" y1="{}" x2="{}" y2="{}"/>"#, p(x0), p(y0), p(x0), p(y1));
    let _ = writeln!(out, "</g>");
    for i in 0..=4 {
        let v = y.lo + (y.hi - y.lo) * i as f64 / 4.0;
        let ty = y.y(v);
        let _ = writeln!(out, r##"<line class="tick" x1="{}" y1="{}" x2="{}" y2="{}" stroke="#333333"/>"##, p(x0 - 4.0), p(ty), p(x0), p(ty));
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, p(x0 - 6.0), p(ty + 4.0), esc(&fmt_num(v)));
    }
    let _ = writeln!(out, r#"<text class="xlabel" x="{}" y="{}" text-anchor="middle">{}</text>"#, p(LEFT + plot_w() / 2.0), p(HEIGHT - 12.0), esc(x_label));
    let _ = writeln!(
        out,
        r#"<text class="ylabel" x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        p(TOP + plot_h() / 2.0),
        p(TOP + plot_h() / 2.0),
        esc(y_label)
    );
}

fn legend(out: &mut String, entries: &[(String, &str)]) {
    let _ = writeln!(out, r#"<g class="legend">"#);
    for (i, (label, color)) in entries.iter().enumerate() {
        let y = TOP + 8.0 + i as f64 * 18.0;
        let x = LEFT + plot_w() + 16.0;
        let _ = writeln!(out, r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/>"#, p(x), p(y - 9.0));
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, p(x + 14.0), p(y), esc(label));
    }
    let _ = writeln!(out, "</g>");
}

fn x_labels(out: &mut String, labels: &[(f64, String)]) {
    let step = (labels.len() / 8).max(1);
    for (i, (x, label)) in labels.iter().enumerate() {
        if i % step != 0 && i + 1 != labels.len() {
            continue;
        }
        let y = TOP + plot_h() + 14.0;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end" transform="rotate(-30 {} {})">{}</text>"#,
            p(*x),
            p(y),
            p(*x),
            p(y),
            esc(label)
        );
    }
}

fn line(out: &mut String, spec: &ChartSpec, columns: &[String], rows: &[Vec<Cell>]) {
    let Some(xi) = index(columns, spec.x.as_deref()) else { return table(out, columns, rows) };
    let mut xs: Vec<&Cell> = rows.iter().map(|r| &r[xi]).collect();
    xs.sort_by(|a, b| cmp_cells(a, b));
    xs.dedup_by(|a, b| cmp_cells(a, b).is_eq());
    let pos = |c: &Cell| xs.iter().position(|x| cmp_cells(x, c).is_eq()).unwrap_or(0);
    let xpix = |i: usize| if xs.len() <= 1 { LEFT + plot_w() / 2.0 } else { LEFT + plot_w() * i as f64 / (xs.len() - 1) as f64 };

    let mut series: BTreeMap<String, (usize, Vec<(usize, f64)>)> = BTreeMap::new();
    let ycols: Vec<usize> = spec.y.iter().filter_map(|y| index(columns, Some(y))).collect();
    let si = index(columns, spec.series.as_deref());
    for r in rows {
        for (k, &yi) in ycols.iter().enumerate() {
            let Some(v) = r[yi].as_f64() else { continue };
            let key = match si {
                Some(si) => display_cell(&r[si]),
                None => columns[yi].clone(),
            };
            let order = if si.is_some() { 0 } else { k };
            series.entry(key).or_insert((order, Vec::new())).1.push((pos(&r[xi]), v));
        }
    }
    let scale = Scale::new(series.values().flat_map(|(_, pts)| pts.iter().map(|p| p.1)), false);
    axes(out, &scale, spec.x.as_deref().unwrap_or(""), &spec.y.join(", "));
    let labels: Vec<(f64, String)> = xs.iter().enumerate().map(|(i, c)| (xpix(i), display_cell(c))).collect();
    x_labels(out, &labels);
    let mut ordered: Vec<(&String, &(usize, Vec<(usize, f64)>))> = series.iter().collect();
    ordered.sort_by(|a, b| a.1 .0.cmp(&b.1 .0).then(a.0.cmp(b.0)));
    let mut entries = Vec::new();
    for (n, (name, (_, pts))) in ordered.into_iter().enumerate() {
        let mut pts = pts.clone();
        pts.sort_by(|a, b| a.0.cmp(&b.0));
        let color = PALETTE[n % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|(i, v)| format!("{},{}", p(xpix(*i)), p(scale.y(*v)))).collect();
        let _ = writeln!(
            out,
            r#"<polyline class="series" data-name="{}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            esc(name),
            coords.join(" ")
        );
        entries.push((name.clone(), color));
    }
    legend(out, &entries);
}

fn bar(out: &mut String, spec: &ChartSpec, columns: &[String], rows: &[Vec<Cell>]) {
    let (Some(xi), Some(yi)) = (index(columns, spec.x.as_deref()), index(columns, spec.y.first().map(String::as_str))) else {
        return table(out, columns, rows);
    };
    let bars: Vec<(String, f64)> = rows.iter().filter_map(|r| r[yi].as_f64().map(|v| (display_cell(&r[xi]), v))).collect();
    let scale = Scale::new(bars.iter().map(|b| b.1), true);
    axes(out, &scale, &columns[xi], &columns[yi]);
    let slot = plot_w() / bars.len().max(1) as f64;
    let width = slot * 0.7;
    let mut labels = Vec::new();
    for (i, (label, v)) in bars.iter().enumerate() {
        let x = LEFT + slot * i as f64 + (slot - width) / 2.0;
        let (top, bottom) = (scale.y(v.max(0.0)), scale.y(v.min(0.0)));
        let _ = writeln!(
            out,
            r#"<rect class="bar" data-label="{}" x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
            esc(label),
            p(x),
            p(top),
            p(width),
            p(bottom - top),
            PALETTE[0]
        );
        labels.push((x + width / 2.0, label.clone()));
    }
    x_labels(out, &labels);
    legend(out, &[(columns[yi].clone(), PALETTE[0])]);
}

fn scatter(out: &mut String, spec: &ChartSpec, columns: &[String], rows: &[Vec<Cell>]) {
    let (Some(xi), Some(yi)) = (index(columns, spec.x.as_deref()), index(columns, spec.y.first().map(String::as_str))) else {
        return table(out, columns, rows);
    };
    let pts: Vec<(f64, f64)> = rows.iter().filter_map(|r| Some((r[xi].as_f64()?, r[yi].as_f64()?))).collect();
    let xs = Scale::new(pts.iter().map(|p| p.0), false);
    let ys = Scale::new(pts.iter().map(|p| p.1), false);
    axes(out, &ys, &columns[xi], &columns[yi]);
    let labels: Vec<(f64, String)> = (0..=4).map(|i| xs.lo + (xs.hi - xs.lo) * i as f64 / 4.0).map(|v| (xs.x(v), fmt_num(v))).collect();
    x_labels(out, &labels);
    for (x, y) in pts {
        let _ = writeln!(out, r#"<circle class="point" cx="{}" cy="{}" r="3" fill="{}" fill-opacity="0.7"/>"#, p(xs.x(x)), p(ys.y(y)), PALETTE[0]);
    }
}

fn heatmap(out: &mut String, spec: &ChartSpec, columns: &[String], rows: &[Vec<Cell>]) {
    let (Some(xi), Some(si), Some(vi)) = (
        index(columns, spec.x.as_deref()),
        index(columns, spec.series.as_deref()),
        index(columns, spec.y.first().map(String::as_str)),
    ) else {
        return table(out, columns, rows);
    };
    let mut cols: Vec<&Cell> = rows.iter().map(|r| &r[xi]).collect();
    cols.sort_by(|a, b| cmp_cells(a, b));
    cols.dedup_by(|a, b| cmp_cells(a, b).is_eq());
    let mut lines: Vec<&Cell> = rows.iter().map(|r| &r[si]).collect();
    lines.sort_by(|a, b| cmp_cells(a, b));
    lines.dedup_by(|a, b| cmp_cells(a, b).is_eq());
    let scale = Scale::new(rows.iter().filter_map(|r| r[vi].as_f64()), false);
    let (cw, ch) = (plot_w() / cols.len().max(1) as f64, plot_h() / lines.len().max(1) as f64);
    let _ = writeln!(out, r#"<text class="xlabel" x="{}" y="{}" text-anchor="middle">{}</text>"#, p(LEFT + plot_w() / 2.0), p(HEIGHT - 12.0), esc(&columns[xi]));
    for (j, l) in lines.iter().enumerate() {
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, p(LEFT - 6.0), p(TOP + ch * (j as f64 + 0.5) + 4.0), esc(&display_cell(l)));
    }
    let labels: Vec<(f64, String)> = cols.iter().enumerate().map(|(i, c)| (LEFT + cw * (i as f64 + 0.5), display_cell(c))).collect();
    x_labels(out, &labels);
    for r in rows {
        let Some(v) = r[vi].as_f64() else { continue };
        let i = cols.iter().position(|c| cmp_cells(c, &r[xi]).is_eq()).unwrap_or(0);
        let j = lines.iter().position(|c| cmp_cells(c, &r[si]).is_eq()).unwrap_or(0);
        let t = scale.frac(v);
        let shade = |lo: f64, hi: f64| (lo + (hi - lo) * t).round() as u8;
        let _ = writeln!(
            out,
            r#"<rect class="cell" x="{}" y="{}" width="{}" height="{}" fill="rgb({},{},{})"><title>{}</title></rect>"#,
            p(LEFT + cw * i as f64),
            p(TOP + ch * j as f64),
            p(cw),
            p(ch),
            shade(247.0, 8.0),
            shade(251.0, 48.0),
            shade(255.0, 107.0),
            esc(&fmt_num(v))
        );
    }
    legend(out, &[(format!("{} {}", columns[vi], fmt_num(scale.lo)), "#f7fbff"), (format!("{} {}", columns[vi], fmt_num(scale.hi)), "#08306b")]);
}

fn table(out: &mut String, columns: &[String], rows: &[Vec<Cell>]) {
    if rows.is_empty() {
        let _ = writeln!(out, r#"<text class="notice" x="{}" y="{}" text-anchor="middle">no rows</text>"#, p(WIDTH / 2.0), p(HEIGHT / 2.0));
        return;
    }
    let width = (WIDTH - 40.0) / columns.len().max(1) as f64;
    for (i, c) in columns.iter().enumerate() {
        let _ = writeln!(out, r#"<text class="header" x="{}" y="{}" font-weight="bold">{}</text>"#, p(20.0 + width * i as f64), p(TOP + 10.0), esc(c));
    }
    for (j, row) in rows.iter().take(TABLE_ROWS).enumerate() {
        let y = TOP + 28.0 + 16.0 * j as f64;
        let _ = write!(out, r#"<g class="row">"#);
        for (i, cell) in row.iter().enumerate() {
            let _ = write!(out, r#"<text x="{}" y="{}">{}</text>"#, p(20.0 + width * i as f64), p(y), esc(&display_cell(cell)));
        }
        let _ = writeln!(out, "</g>");
    }
    if rows.len() > TABLE_ROWS {
        let _ = writeln!(out, r#"<text class="notice" x="20" y="{}">{} more rows</text>"#, p(HEIGHT - 16.0), rows.len() - TABLE_ROWS);
    }
}

/// Renders a chart over the given result columns and rows.
pub fn render_svg(spec: &ChartSpec, columns: &[String], rows: &[Vec<Cell>]) -> String {
    let mut out = String::new();
    header(&mut out, &spec.title);
    if rows.is_empty() {
        table(&mut out, columns, rows);
    } else {
        match spec.chart_type {
            ChartType::Line => line(&mut out, spec, columns, rows),
            ChartType::Bar => bar(&mut out, spec, columns, rows),
            ChartType::Scatter => scatter(&mut out, spec, columns, rows),
            ChartType::Heatmap => heatmap(&mut out, spec, columns, rows),
            ChartType::Table => table(&mut out, columns, rows),
        }
    }
    out.push_str("</svg>\n");
    out
}

pub fn render_chart(spec: &ChartSpec, columns: &[String], rows: &[Vec<Cell>], path: &Path) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, render_svg(spec, columns, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(t: ChartType, x: &str, y: &str, series: Option<&str>) -> ChartSpec {
        ChartSpec { chart_type: t, x: Some(x.into()), y: vec![y.into()], series: series.map(Into::into), title: "t <&>".into(), notice: None }
    }

    fn count(svg: &str, tag: &str, class: &str) -> usize {
        let doc = roxmltree::Document::parse(svg).expect("well-formed svg");
        doc.descendants().filter(|n| n.has_tag_name(tag) && n.attribute("class") == Some(class)).count()
    }

    #[test]
    fn line_has_one_series() {
        let rows: Vec<Vec<Cell>> = (0..30).map(|i| vec![Cell::Text(format!("2024-01-{:02}", i + 1)), Cell::Float(i as f64)]).collect();
        let svg = render_svg(&spec(ChartType::Line, "d", "v", None), &["d".into(), "v".into()], &rows);
        assert_eq!(count(&svg, "polyline", "series"), 1);
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let pl = doc.descendants().find(|n| n.has_tag_name("polyline")).unwrap();
        assert_eq!(pl.attribute("points").unwrap().split(' ').count(), 30);
    }

    #[test]
    fn bars_and_cells_and_points() {
        let cols: Vec<String> = vec!["r".into(), "v".into()];
        let rows = vec![vec![Cell::Text("a".into()), Cell::Int(1)], vec![Cell::Text("b".into()), Cell::Int(2)], vec![Cell::Text("c".into()), Cell::Int(-1)]];
        assert_eq!(count(&render_svg(&spec(ChartType::Bar, "r", "v", None), &cols, &rows), "rect", "bar"), 3);
        let pts = vec![vec![Cell::Float(1.0), Cell::Float(2.0)], vec![Cell::Float(2.0), Cell::Float(3.0)]];
        assert_eq!(count(&render_svg(&spec(ChartType::Scatter, "r", "v", None), &cols, &pts), "circle", "point"), 2);
        let hcols: Vec<String> = vec!["a".into(), "b".into(), "v".into()];
        let hrows = vec![
            vec![Cell::Text("x".into()), Cell::Text("p".into()), Cell::Int(1)],
            vec![Cell::Text("x".into()), Cell::Text("q".into()), Cell::Int(2)],
            vec![Cell::Text("y".into()), Cell::Text("p".into()), Cell::Int(3)],
        ];
        assert_eq!(count(&render_svg(&spec(ChartType::Heatmap, "a", "v", Some("b")), &hcols, &hrows), "rect", "cell"), 3);
    }

    #[test]
    fn empty_result_has_notice_and_output_is_stable() {
        let s = spec(ChartType::Table, "a", "b", None);
        let svg = render_svg(&s, &["a".into()], &[]);
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let notice = doc.descendants().find(|n| n.attribute("class") == Some("notice")).unwrap();
        assert_eq!(notice.text(), Some("no rows"));
        assert_eq!(svg, render_svg(&s, &["a".into()], &[]));
    }
}
