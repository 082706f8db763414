use serde::{Deserialize, Serialize};

use super::ResultSummary;
use crate::ingestion::UnifiedType;

/// Most distinct values a category axis may have.
pub const MAX_CATEGORIES: usize = 30;

const TEMPORAL_NAMES: &[&str] = &["year", "month", "day", "week", "quarter", "hour", "date", "yr", "dt"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ChartType {
    Line,
    Bar,
    Scatter,
    Heatmap,
    Table,
}

impl ChartType {
    pub fn as_str(self) -> &'static str {
        match self {
            ChartType::Line => "LINE",
            ChartType::Bar => "BAR",
            ChartType::Scatter => "SCATTER",
            ChartType::Heatmap => "HEATMAP",
            ChartType::Table => "TABLE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub chart_type: ChartType,
    pub x: Option<String>,
    pub y: Vec<String>,
    pub series: Option<String>,
    pub title: String,
    pub notice: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnClass {
    Temporal,
    Numeric,
    Categorical,
}

/// DATE/DATETIME columns, and integer columns named like a calendar unit
/// (`year`, `order_month`, `day_index`, ...).
pub fn is_temporal_column(name: &str, ty: UnifiedType) -> bool {
    if ty.is_temporal() {
        return true;
    }
    if ty != UnifiedType::Int {
        return false;
    }
    let lower = name.to_ascii_lowercase();
    lower.split(|c: char| !c.is_ascii_alphanumeric()).any(|part| TEMPORAL_NAMES.contains(&part))
}

pub fn classify_columns(summary: &ResultSummary) -> Vec<ColumnClass> {
    summary
        .columns
        .iter()
        .map(|c| {
            if is_temporal_column(&c.name, c.unified_type) {
                ColumnClass::Temporal
            } else if c.unified_type.is_numeric() {
                ColumnClass::Numeric
            } else {
                ColumnClass::Categorical
            }
        })
        .collect()
}

fn applicable(summary: &ResultSummary, classes: &[ColumnClass]) -> Vec<ChartType> {
    let count = |k| classes.iter().filter(|c| **c == k).count();
    let (temporal, numeric, categorical) = (count(ColumnClass::Temporal), count(ColumnClass::Numeric), count(ColumnClass::Categorical));
    let dims: Vec<usize> = (0..classes.len()).filter(|i| classes[*i] != ColumnClass::Numeric).collect();
    let mut out = Vec::new();
    if temporal == 1 && numeric >= 1 && categorical <= 1 {
        out.push(ChartType::Line);
    }
    if numeric == 1 && dims.len() == 1 && summary.columns[dims[0]].distinct <= MAX_CATEGORIES {
        out.push(ChartType::Bar);
    }
    if numeric == 2 && temporal == 0 && categorical == 0 {
        out.push(ChartType::Scatter);
    }
    if numeric == 1 && dims.len() == 2 && categorical >= 1 {
        out.push(ChartType::Heatmap);
    }
    out
}

fn keyword_choice(question: &str) -> Option<ChartType> {
    let q = question.to_lowercase();
    if q.contains("trend") {
        Some(ChartType::Line)
    } else if q.contains("compare") || q.contains("comparison") {
        Some(ChartType::Bar)
    } else if q.contains("correlat") {
        Some(ChartType::Scatter)
    } else {
        None
    }
}

fn first_of(classes: &[ColumnClass], k: ColumnClass, names: &[String]) -> Option<String> {
    classes.iter().position(|c| *c == k).map(|i| names[i].clone())
}

fn all_of(classes: &[ColumnClass], k: ColumnClass, names: &[String]) -> Vec<String> {
    classes.iter().zip(names).filter(|(c, _)| **c == k).map(|(_, n)| n.clone()).collect()
}

/// Picks a chart for a result. Rules, in priority order: one temporal column
/// with numeric measures is a LINE; one dimension with at most 30 values and
/// one measure is a BAR; two measures are a SCATTER; two dimensions and one
/// measure are a HEATMAP; anything else is a TABLE. A keyword in the question
/// (trend, compare, correlat) chooses among rules that all apply.
pub fn select_chart(summary: &ResultSummary, question: &str) -> ChartSpec {
    let names = summary.column_names();
    let title = question.trim().to_string();
    if summary.row_count == 0 {
        return ChartSpec { chart_type: ChartType::Table, x: None, y: names, series: None, title, notice: Some("no rows".into()) };
    }
    let classes = classify_columns(summary);
    let rules = applicable(summary, &classes);
    let chosen = match keyword_choice(question) {
        Some(k) if rules.contains(&k) => Some(k),
        _ => rules.first().copied(),
    };
    let numeric = all_of(&classes, ColumnClass::Numeric, &names);
    let spec = |chart_type, x, y, series| ChartSpec { chart_type, x, y, series, title: title.clone(), notice: None };
    match chosen {
        Some(ChartType::Line) => spec(
            ChartType::Line,
            first_of(&classes, ColumnClass::Temporal, &names),
            numeric,
            first_of(&classes, ColumnClass::Categorical, &names),
        ),
        Some(ChartType::Bar) => {
            let dim = classes.iter().position(|c| *c != ColumnClass::Numeric).map(|i| names[i].clone());
            spec(ChartType::Bar, dim, numeric, None)
        }
        Some(ChartType::Scatter) => spec(ChartType::Scatter, Some(numeric[0].clone()), vec![numeric[1].clone()], None),
        Some(ChartType::Heatmap) => {
            let dims: Vec<String> =
                classes.iter().zip(&names).filter(|(c, _)| **c != ColumnClass::Numeric).map(|(_, n)| n.clone()).collect();
            spec(ChartType::Heatmap, Some(dims[0].clone()), numeric, Some(dims[1].clone()))
        }
        _ => spec(ChartType::Table, None, names.clone(), None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::ColumnProfile;
    use proptest::prelude::*;

    fn summary(cols: &[(&str, UnifiedType, usize)]) -> ResultSummary {
        ResultSummary {
            columns: cols.iter().map(|(n, t, d)| ColumnProfile { name: n.to_string(), unified_type: *t, distinct: *d }).collect(),
            row_count: 10,
            ..ResultSummary::empty()
        }
    }

    #[test]
    fn canonical_shapes() {
        use UnifiedType::*;
        let line = select_chart(&summary(&[("log_date", Date, 30), ("daily_cvr", Float, 30)]), "");
        assert_eq!((line.chart_type, line.x.as_deref()), (ChartType::Line, Some("log_date")));
        let bar = select_chart(&summary(&[("region", Text, 5), ("sales", Float, 5)]), "");
        assert_eq!(bar.chart_type, ChartType::Bar);
        let scatter = select_chart(&summary(&[("rate", Float, 30), ("covid_severity", Float, 30)]), "");
        assert_eq!(scatter.chart_type, ChartType::Scatter);
        let heat = select_chart(&summary(&[("region", Text, 4), ("channel", Text, 3), ("sales", Float, 12)]), "");
        assert_eq!(heat.chart_type, ChartType::Heatmap);
        let mut single = summary(&[("n", Int, 1)]);
        single.row_count = 1;
        assert_eq!(select_chart(&single, "").chart_type, ChartType::Table);
    }

    #[test]
    fn keywords_break_ties_only_among_applicable_rules() {
        use UnifiedType::*;
        let s = summary(&[("month", Int, 12), ("sales", Float, 12)]);
        assert_eq!(select_chart(&s, "monthly sales").chart_type, ChartType::Line);
        assert_eq!(select_chart(&s, "compare months").chart_type, ChartType::Bar);
        assert_eq!(select_chart(&s, "correlation?").chart_type, ChartType::Line);
    }

    #[test]
    fn wide_categories_fall_back_to_table() {
        let s = summary(&[("user", UnifiedType::Text, 500), ("sales", UnifiedType::Float, 400)]);
        assert_eq!(select_chart(&s, "").chart_type, ChartType::Table);
    }

    #[test]
    fn empty_results_carry_a_notice() {
        let mut s = summary(&[("a", UnifiedType::Text, 0)]);
        s.row_count = 0;
        let spec = select_chart(&s, "q");
        assert_eq!((spec.chart_type, spec.notice.as_deref()), (ChartType::Table, Some("no rows")));
    }

    fn schema() -> impl Strategy<Value = Vec<(String, UnifiedType, usize)>> {
        let col = (
            prop::sample::select(vec!["log_date", "month", "region", "amount", "rate", "flag", "ts", "label"]),
            prop::sample::select(UnifiedType::ALL.to_vec()),
            1usize..60,
        );
        prop::collection::vec(col, 1..5).prop_map(|cols| {
            cols.into_iter().enumerate().map(|(i, (n, t, d))| (format!("{n}_{i}"), t, d)).collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]
        #[test]
        fn every_schema_gets_a_valid_spec(cols in schema(), q in prop::sample::select(vec!["", "trend", "compare", "correlation"])) {
            let refs: Vec<(&str, UnifiedType, usize)> = cols.iter().map(|(n, t, d)| (n.as_str(), *t, *d)).collect();
            let s = summary(&refs);
            let spec = select_chart(&s, q);
            let names = s.column_names();
            for c in spec.x.iter().chain(&spec.y).chain(&spec.series) {
                prop_assert!(names.contains(c));
            }
            let classes = classify_columns(&s);
            let class_of = |n: &str| classes[names.iter().position(|x| x == n).unwrap()];
            match spec.chart_type {
                ChartType::Line => prop_assert_eq!(class_of(spec.x.as_deref().unwrap()), ColumnClass::Temporal),
                ChartType::Scatter => prop_assert_eq!(spec.y.len(), 1),
                ChartType::Bar | ChartType::Heatmap => prop_assert!(spec.x.is_some()),
                ChartType::Table => prop_assert!(applicable(&s, &classes).is_empty()),
            }
        }
    }
}
