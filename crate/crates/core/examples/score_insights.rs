//! Scores predicted insights against ground truth: for every ground-truth
//! statement take the best judge score over the predictions, then average.

use unilink::synthesis::{score_insights, LexicalJudge};

fn main() {
    let ground_truth = vec![
        "daily_cvr is highest in region r1003".to_string(),
        "daily_cvr rises over time".to_string(),
        "ad_spend drives daily_cvr".to_string(),
    ];
    let predicted = vec![
        "Region r1003 has the highest daily_cvr of all regions.".to_string(),
        "Over the period, daily_cvr rises steadily.".to_string(),
    ];
    let judge = |g: &str, p: &str| Ok(LexicalJudge::f1(g, p));
    let report = score_insights(&ground_truth, &predicted, &judge).expect("non-empty ground truth");
    for (i, g) in ground_truth.iter().enumerate() {
        let best = report.best_match[i].map_or("-".to_string(), |j| format!("#{j}"));
        println!("{:.3}  {g}  (best: {best})", report.maxima[i]);
    }
    println!("mean {:.4}", report.mean);

    let stub = |g: &str, _: &str| Ok(if g.contains("highest") { 0.8 } else { 0.4 });
    let r = score_insights(&ground_truth[..2], &predicted, &stub).unwrap();
    println!("stub judge: maxima {:?} mean {:.4}", r.maxima, r.mean);
}
