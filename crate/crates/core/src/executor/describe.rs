//! Templated observations of a result, used as the offline narrative and as
//! the fact sheet handed to the observing model.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use super::{display_cell, fmt_num, ChartSpec, ChartType, ResultSummary};
use crate::staging::Cell;

pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (dx, dy) = (xs[i] - mx, ys[i] - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Least-squares slope of `ys` against 0..n and its t statistic.
fn slope_t(ys: &[f64]) -> Option<(f64, f64)> {
    let n = ys.len();
    if n < 3 {
        return None;
    }
    let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let mx = (n - 1) as f64 / 2.0;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let se = (sse / (n - 2) as f64 / sxx).sqrt();
    let t = if se > 0.0 { slope / se } else if slope == 0.0 { 0.0 } else { f64::INFINITY.copysign(slope) };
    Some((slope, t))
}

fn index_of(summary: &ResultSummary, name: &str) -> Option<usize> {
    summary.columns.iter().position(|c| c.name == name)
}

pub(crate) fn cmp_cells(a: &Cell, b: &Cell) -> Ordering {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) if !matches!(a, Cell::Text(_)) || !matches!(b, Cell::Text(_)) => x.total_cmp(&y),
        _ => a.to_string().cmp(&b.to_string()),
    }
}

fn asks_for_low(question: &str) -> bool {
    let q = question.to_lowercase();
    q.contains("lowest") || q.contains("minimum") || q.contains("least") || q.contains("worst")
}

fn asks_for_extreme(question: &str) -> bool {
    let q = question.to_lowercase();
    ["highest", "lowest", "peak", "maximum", "minimum", "largest", "smallest", "which"].iter().any(|k| q.contains(k))
}

fn line_facts(summary: &ResultSummary, rows: &[Vec<Cell>], spec: &ChartSpec, question: &str) -> Option<String> {
    let x = spec.x.as_deref()?;
    let y = spec.y.first()?;
    let (xi, yi) = (index_of(summary, x)?, index_of(summary, y)?);
    if let Some(series) = &spec.series {
        let si = index_of(summary, series)?;
        let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in rows {
            if let Some(v) = r[yi].as_f64() {
                groups.entry(display_cell(&r[si])).or_default().push(v);
            }
        }
        let means: Vec<(String, f64)> =
            groups.into_iter().map(|(k, v)| (k, v.iter().sum::<f64>() / v.len() as f64)).collect();
        let top = means.iter().max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))?;
        let bottom = means.iter().min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))?;
        let groups = format!(
            "{y} over {x} across {} {series} values: {} has the highest average ({}) versus {} with the lowest ({}).",
            means.len(),
            top.0,
            fmt_num(top.1),
            bottom.0,
            fmt_num(bottom.1)
        );
        if !asks_for_extreme(question) {
            return Some(groups);
        }
        let valued = rows.iter().filter_map(|r| r[yi].as_f64().map(|v| (r, v)));
        let (word, pick) = if asks_for_low(question) {
            ("lowest", valued.min_by(|a, b| a.1.total_cmp(&b.1)))
        } else {
            ("highest", valued.max_by(|a, b| a.1.total_cmp(&b.1).then(cmp_cells(&b.0[xi], &a.0[xi]))))
        };
        let (row, v) = pick?;
        return Some(format!(
            "The {word} {y} is {} on {} for {series} {}. {groups}",
            fmt_num(v),
            display_cell(&row[xi]),
            display_cell(&row[si])
        ));
    }
    let mut points: Vec<(&Cell, f64)> = rows.iter().filter_map(|r| r[yi].as_f64().map(|v| (&r[xi], v))).collect();
    points.sort_by(|a, b| cmp_cells(a.0, b.0));
    if points.is_empty() {
        return None;
    }
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let hi = points.iter().enumerate().max_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(b.0.cmp(&a.0)))?.1;
    let lo = points.iter().enumerate().min_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(a.0.cmp(&b.0)))?.1;
    let extreme = if asks_for_low(question) {
        format!("The lowest {y} is {} on {}, and the highest is {} on {}.", fmt_num(lo.1), display_cell(lo.0), fmt_num(hi.1), display_cell(hi.0))
    } else {
        format!("The highest {y} is {} on {}, and the lowest is {} on {}.", fmt_num(hi.1), display_cell(hi.0), fmt_num(lo.1), display_cell(lo.0))
    };
    let (first, last) = (points[0], points[points.len() - 1]);
    let trend = match slope_t(&ys) {
        Some((slope, t)) if t.abs() >= 2.0 => format!(
            "{y} shows {} trend over {x}, moving from {} on {} to {} on {} (slope {} per step).",
            if slope > 0.0 { "an increasing" } else { "a decreasing" },
            fmt_num(first.1),
            display_cell(first.0),
            fmt_num(last.1),
            display_cell(last.0),
            fmt_num(slope)
        ),
        _ => format!("{y} stays within {} to {} over {x} without a sustained direction.", fmt_num(lo.1), fmt_num(hi.1)),
    };
    Some(if asks_for_extreme(question) { format!("{extreme} {trend}") } else { format!("{trend} {extreme}") })
}

fn bar_facts(summary: &ResultSummary, rows: &[Vec<Cell>], spec: &ChartSpec) -> Option<String> {
    let x = spec.x.as_deref()?;
    let y = spec.y.first()?;
    let (xi, yi) = (index_of(summary, x)?, index_of(summary, y)?);
    let mut bars: Vec<(String, f64)> = rows.iter().filter_map(|r| r[yi].as_f64().map(|v| (display_cell(&r[xi]), v))).collect();
    bars.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let (top, bottom) = (bars.first()?, bars.last()?);
    if bars.len() == 1 {
        return Some(format!("{x} {} has {y} {}.", top.0, fmt_num(top.1)));
    }
    let mut text = if bars.len() == 2 {
        format!("{} has a higher {y} ({}) compared with {} ({}).", top.0, fmt_num(top.1), bottom.0, fmt_num(bottom.1))
    } else {
        format!(
            "Among {} {x} values, {} has the highest {y} ({}) versus {} with the lowest ({}).",
            bars.len(),
            top.0,
            fmt_num(top.1),
            bottom.0,
            fmt_num(bottom.1)
        )
    };
    let gap = top.1 - bottom.1;
    text.push_str(&format!(" The gap is {}", fmt_num(gap)));
    if bottom.1.abs() > f64::EPSILON {
        text.push_str(&format!(" ({}% of the lowest)", fmt_num((gap / bottom.1.abs() * 100.0 * 10.0).round() / 10.0)));
    }
    text.push('.');
    if let Some(outlier) = standout(&bars) {
        text.push_str(&format!(" {} stands out from the other {x} values.", outlier.0));
    }
    Some(text)
}

/// The bar lying more than twice the spread of the others away from their
/// mean, if exactly one does.
pub(crate) fn standout(bars: &[(String, f64)]) -> Option<&(String, f64)> {
    if bars.len() < 3 {
        return None;
    }
    let mut hits = bars.iter().enumerate().filter(|(i, (_, v))| {
        let others: Vec<f64> = bars.iter().enumerate().filter(|(j, _)| j != i).map(|(_, b)| b.1).collect();
        let mean = others.iter().sum::<f64>() / others.len() as f64;
        let sd = (others.iter().map(|o| (o - mean).powi(2)).sum::<f64>() / others.len() as f64).sqrt();
        let spread = sd.max(mean.abs() * 0.05).max(1e-9);
        (v - mean).abs() > 2.0 * spread
    });
    let first = hits.next()?;
    hits.next().is_none().then_some(first.1)
}

fn scatter_facts(summary: &ResultSummary, rows: &[Vec<Cell>], spec: &ChartSpec) -> Option<String> {
    let x = spec.x.as_deref()?;
    let y = spec.y.first()?;
    let (xi, yi) = (index_of(summary, x)?, index_of(summary, y)?);
    let pairs: Vec<(f64, f64)> = rows.iter().filter_map(|r| Some((r[xi].as_f64()?, r[yi].as_f64()?))).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let r = pearson(&xs, &ys)?;
    let n = xs.len();
    Some(if r.abs() < 0.1 {
        format!("{y} shows no meaningful linear relationship with {x} (r = {}, n = {n}).", fmt_num(r))
    } else {
        let strength = if r.abs() >= 0.7 { "strongly" } else if r.abs() >= 0.4 { "moderately" } else { "weakly" };
        let sign = if r > 0.0 { "positively" } else { "negatively" };
        format!("{y} is {strength} {sign} correlated with {x} (r = {}, n = {n}).", fmt_num(r))
    })
}

fn heatmap_facts(summary: &ResultSummary, rows: &[Vec<Cell>], spec: &ChartSpec) -> Option<String> {
    let (x, s, v) = (spec.x.as_deref()?, spec.series.as_deref()?, spec.y.first()?);
    let (xi, si, vi) = (index_of(summary, x)?, index_of(summary, s)?, index_of(summary, v)?);
    let cells: Vec<(&Vec<Cell>, f64)> = rows.iter().filter_map(|r| r[vi].as_f64().map(|val| (r, val))).collect();
    let hi = cells.iter().max_by(|a, b| a.1.total_cmp(&b.1))?;
    let lo = cells.iter().min_by(|a, b| a.1.total_cmp(&b.1))?;
    Some(format!(
        "The highest {v} is {} at {x} = {}, {s} = {}; the lowest is {} at {x} = {}, {s} = {}.",
        fmt_num(hi.1),
        display_cell(&hi.0[xi]),
        display_cell(&hi.0[si]),
        fmt_num(lo.1),
        display_cell(&lo.0[xi]),
        display_cell(&lo.0[si])
    ))
}

fn table_facts(summary: &ResultSummary, rows: &[Vec<Cell>]) -> String {
    match rows {
        [] => "The query returned no rows.".to_string(),
        [row] => {
            let parts: Vec<String> = summary.columns.iter().zip(row).map(|(c, v)| format!("{} = {}", c.name, display_cell(v))).collect();
            format!("The result is {}.", parts.join(", "))
        }
        _ => {
            let numeric: Vec<String> = summary
                .stats
                .iter()
                .map(|s| format!("{} ranges from {} to {} (mean {})", s.column, fmt_num(s.min), fmt_num(s.max), fmt_num(s.mean)))
                .collect();
            let mut text = format!("The query returned {} rows.", summary.row_count);
            if !numeric.is_empty() {
                text.push(' ');
                text.push_str(&numeric.join("; "));
                text.push('.');
            }
            text
        }
    }
}

/// Deterministic one-paragraph description of a result, led by the fact the
/// chart type is best at showing.
pub fn describe(summary: &ResultSummary, rows: &[Vec<Cell>], spec: &ChartSpec, question: &str) -> String {
    let specific = match spec.chart_type {
        ChartType::Line => line_facts(summary, rows, spec, question),
        ChartType::Bar => bar_facts(summary, rows, spec),
        ChartType::Scatter => scatter_facts(summary, rows, spec),
        ChartType::Heatmap => heatmap_facts(summary, rows, spec),
        ChartType::Table => None,
    };
    let mut text = specific.unwrap_or_else(|| table_facts(summary, rows));
    if summary.truncated {
        text.push_str(" The result was truncated at the row cap.");
    }
    text
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::select_chart;
    use crate::ingestion::UnifiedType;
    use crate::staging::{QueryResult, ResultColumn};

    fn result(cols: &[(&str, UnifiedType)], rows: Vec<Vec<Cell>>) -> (ResultSummary, Vec<Vec<Cell>>) {
        let q = QueryResult {
            columns: cols.iter().map(|(n, t)| ResultColumn { name: n.to_string(), unified_type: *t }).collect(),
            rows: rows.clone(),
            truncated: false,
            diagnostics: vec![],
        };
        (ResultSummary::from_result(&q, 100), rows)
    }

    #[test]
    fn pearson_oracle() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!(pearson(&[1.0, 1.0], &[1.0, 2.0]).is_none());
    }

    #[test]
    fn rising_series_is_described_as_a_trend() {
        let rows = (0..10).map(|i| vec![Cell::Text(format!("2024-01-{:02}", i + 1)), Cell::Float(10.0 + i as f64)]).collect();
        let (s, rows) = result(&[("log_date", UnifiedType::Date), ("dau", UnifiedType::Float)], rows);
        let spec = select_chart(&s, "daily dau");
        let text = describe(&s, &rows, &spec, "daily dau");
        assert!(text.starts_with("dau shows an increasing trend over log_date"), "{text}");
        let text = describe(&s, &rows, &spec, "Which day has the highest dau?");
        assert!(text.starts_with("The highest dau is 19 on 2024-01-10"), "{text}");
    }

    #[test]
    fn extreme_question_over_series_leads_with_the_row() {
        let rows = vec![
            vec![Cell::Text("2024-01-02".into()), Cell::Text("b".into()), Cell::Float(9.0)],
            vec![Cell::Text("2024-01-01".into()), Cell::Text("a".into()), Cell::Float(7.0)],
            vec![Cell::Text("2024-01-03".into()), Cell::Text("a".into()), Cell::Float(6.5)],
        ];
        let cols = [("day", UnifiedType::Date), ("shop", UnifiedType::Text), ("sales", UnifiedType::Float)];
        let (s, rows) = result(&cols, rows);
        let spec = select_chart(&s, "");
        assert_eq!(spec.series.as_deref(), Some("shop"));
        let text = describe(&s, &rows, &spec, "Which day and shop have the highest sales?");
        assert!(text.starts_with("The highest sales is 9 on 2024-01-02 for shop b. sales over day"), "{text}");
        let text = describe(&s, &rows, &spec, "Sales by shop over time");
        assert!(text.starts_with("sales over day across 2 shop values"), "{text}");
    }

    #[test]
    fn bars_compare_extremes() {
        let rows = vec![
            vec![Cell::Text("east".into()), Cell::Float(10.0)],
            vec![Cell::Text("north".into()), Cell::Float(11.0)],
            vec![Cell::Text("south".into()), Cell::Float(30.0)],
            vec![Cell::Text("west".into()), Cell::Float(10.5)],
        ];
        let (s, rows) = result(&[("region", UnifiedType::Text), ("sales", UnifiedType::Float)], rows);
        let spec = select_chart(&s, "");
        let text = describe(&s, &rows, &spec, "");
        assert!(text.starts_with("Among 4 region values, south has the highest sales (30) versus east with the lowest (10)."), "{text}");
        assert!(text.contains("south stands out"));
    }

    #[test]
    fn scatter_reports_correlation() {
        let rows = (0..20).map(|i| vec![Cell::Float(i as f64), Cell::Float(2.0 * i as f64 + (i % 3) as f64)]).collect();
        let (s, rows) = result(&[("spend", UnifiedType::Float), ("cvr", UnifiedType::Float)], rows);
        let spec = select_chart(&s, "");
        assert!(describe(&s, &rows, &spec, "").starts_with("cvr is strongly positively correlated with spend"));
    }
}
