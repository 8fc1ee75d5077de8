//! ROC AUC, average precision, best F1, and curve points on a small scored set.
//!
//! `cargo run --release --example detection_metrics`

use cai_lab::detect::{average_precision, best_f1, pr_curve, roc_auc, roc_curve};

fn main() -> cai_lab::Result<()> {
    let scores = [0.95, 0.9, 0.8, 0.8, 0.6, 0.55, 0.4, 0.3, 0.2, 0.1];
    let labels = [true, true, false, true, false, true, false, false, true, false];
    let f1 = best_f1(&scores, &labels)?;
    println!("auc {:.4}", roc_auc(&scores, &labels)?);
    println!("ap  {:.4}", average_precision(&scores, &labels)?);
    println!("f1  {:.4} at threshold {}", f1.f1, f1.threshold);
    println!("roc (fpr, tpr, threshold):");
    for (x, y, t) in roc_curve(&scores, &labels)? {
        println!("  {x:.2} {y:.2} {t}");
    }
    println!("pr (recall, precision, threshold):");
    for (x, y, t) in pr_curve(&scores, &labels)? {
        println!("  {x:.2} {y:.2} {t}");
    }
    Ok(())
}
